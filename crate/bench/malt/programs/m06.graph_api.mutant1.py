switch = "ju1.a1.m1.s4c1"
G.add_node(switch, type="PACKET_SWITCH")
G.add_edge("ju1.a1.m1.c1", switch, kind="CONTAINS")
for i in range(1, 5):
    port = f"{switch}.p{i}"
    G.add_node(port, type="PORT", speed=100)
    G.add_edge(switch, port, kind="CONTAINS")
