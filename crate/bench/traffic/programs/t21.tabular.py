pairs = edges.merge(edges, left_on=["src", "dst"], right_on=["dst", "src"])
result = int((pairs["src_x"] < pairs["dst_x"]).sum())
