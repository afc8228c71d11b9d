chassis = "ju1.a1.m1.c2"
result = sum(1 for _, v, d in G.out_edges(chassis, data=True) if d["kind"] == "CONTAINS" and G.nodes[v]["type"] == "PACKET_SWITCH")
