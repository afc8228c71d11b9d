switch = "ju1.a1.m1.s1c4"
G.remove_node(switch)
chassis = [n for n, d in G.nodes(data=True) if d["type"] == "CHASSIS"]
total = sum(G.nodes[c]["capacity"] for c in chassis)
switches = {
    c: sum(1 for _, v, d in G.out_edges(c, data=True) if d["kind"] == "CONTAINS" and G.nodes[v]["type"] == "PACKET_SWITCH")
    for c in chassis
}
n_switches = sum(switches.values())
for c in chassis:
    G.nodes[c]["capacity"] = total * switches[c] // n_switches
