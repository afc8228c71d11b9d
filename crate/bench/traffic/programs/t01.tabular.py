nodes.loc[nodes["id"].str.startswith("15.76."), "app"] = "production"
