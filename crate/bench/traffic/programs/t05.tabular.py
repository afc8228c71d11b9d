result = nodes.loc[nodes["id"].str.startswith("15.76."), "id"].tolist()
