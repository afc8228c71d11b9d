switch = "ju1.a1.m1.s1c4"
ports = edges.loc[(edges["src"] == switch) & (edges["kind"] == "CONTAINS"), "dst"]
gone = set(ports) | {switch}
nodes = nodes[~nodes["id"].isin(gone)].copy()
edges = edges[~edges["src"].isin(gone) & ~edges["dst"].isin(gone)]
is_chassis = nodes["type"] == "CHASSIS"
switch_ids = set(nodes.loc[nodes["type"] == "PACKET_SWITCH", "id"])
contains = edges[(edges["kind"] == "CONTAINS") & edges["dst"].isin(switch_ids)]
counts = contains.groupby("src").size()
total = int(nodes.loc[is_chassis, "capacity"].sum())
n_switches = int(counts.sum())
nodes.loc[is_chassis, "capacity"] = nodes.loc[is_chassis, "id"].map(lambda c: total * int(counts.get(c, 0)) // n_switches)
