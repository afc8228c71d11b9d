switch = "ju1.a1.m1.s3c2"
G.add_edge("ju1.a1.m1.c3", switch, kind="CONTAINS")
rows = []
for c, d in G.nodes(data=True):
    if d["type"] == "CHASSIS":
        n = sum(1 for _, v, e in G.out_edges(c, data=True) if e["kind"] == "CONTAINS" and G.nodes[v]["type"] == "PACKET_SWITCH")
        rows.append({"chassis": c, "switches": n})
result = rows
