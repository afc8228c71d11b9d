result = edges.groupby("src", as_index=False)["bytes"].sum().rename(columns={"src": "node", "bytes": "total_bytes"})
