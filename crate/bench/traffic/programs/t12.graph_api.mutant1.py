result = sum(1 for n in G.nodes if G.out_degree(n) == 0)
