result = sum(1 for n in G.nodes if G.in_degree(n) == 0)
