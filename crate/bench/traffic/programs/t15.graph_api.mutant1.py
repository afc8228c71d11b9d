result = sum(1 for u, v in G.edges if u.split(".")[:1] != v.split(".")[:1]) - 1
