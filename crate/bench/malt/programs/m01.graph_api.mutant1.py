switch = "ju1.a1.m1.s1c1"
result = [v for _, v, d in G.out_edges(switch, data=True) if d["kind"] == "CONTAINS" and G.nodes[v]["type"] == "PORT"]
