chassis = [n for n, d in G.nodes(data=True) if d["type"] == "CHASSIS"]
result = sorted(chassis, key=lambda n: G.nodes[n]["capacity"], reverse=True)[:2]
