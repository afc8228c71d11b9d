result = [n for n in G.nodes if n.startswith("15.76.")][1:]
