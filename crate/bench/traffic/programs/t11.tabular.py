result = edges.groupby("src")["bytes"].sum().sort_values(ascending=False).head(5).index.tolist()
