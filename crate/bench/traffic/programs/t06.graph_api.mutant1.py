u, v, _ = min(G.edges(data=True), key=lambda e: e[2]["packets"])
result = [{"src": u, "dst": v}]
