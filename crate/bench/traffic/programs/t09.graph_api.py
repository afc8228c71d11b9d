prefixes = sorted({".".join(n.split(".")[:2]) for n in G.nodes})
palette = {p: i for i, p in enumerate(prefixes)}
for n in G.nodes:
    G.nodes[n]["color"] = palette[".".join(n.split(".")[:2])]
