contained = edges.loc[(edges["src"] == "ju1.a1.m1.c2") & (edges["kind"] == "CONTAINS"), "dst"]
result = int((nodes["id"].isin(contained) & (nodes["type"] == "PACKET_SWITCH")).sum())
