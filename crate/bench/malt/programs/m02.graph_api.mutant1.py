result = len(nx.descendants(G, "ju1.a1.m1.c2"))
