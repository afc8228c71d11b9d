G.remove_edges_from([(u, v) for u, v, d in G.edges(data=True) if d["connections"] < 100])
