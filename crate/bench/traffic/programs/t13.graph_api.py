G.remove_nodes_from([n for n in list(G.nodes) if n.startswith("15.76.")])
