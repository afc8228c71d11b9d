ranked = sorted(G.edges(data=True), key=lambda e: e[2]["packets"], reverse=True)
for _, _, d in ranked[: len(ranked) // 10]:
    d["tier"] = "high"
