nodes["app"] = "production"
