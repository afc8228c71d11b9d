result = nodes[nodes["type"] == "CHASSIS"].sort_values("capacity", ascending=False)["id"].head(2).tolist()
