result = sum(1 for u, v in G.edges if G.has_edge(v, u))
