result = sum(1 for u, v in G.edges if u.split(".")[:2] != v.split(".")[:2])
