result = sum(d["capacity"] for _, d in G.nodes(data=True) if d["type"] == "CHASSIS")
