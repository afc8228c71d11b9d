for n in G.nodes:
    if n.startswith("15.76."):
        G.nodes[n]["app"] = "prod"
