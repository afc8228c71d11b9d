G.remove_edges_from([(u, v) for u, v in list(G.edges) if u.startswith("15.76.") or v.startswith("15.76.")])
