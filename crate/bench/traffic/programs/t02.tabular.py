result = len(nodes)
