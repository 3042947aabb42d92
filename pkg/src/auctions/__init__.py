"""Static auctions: Myerson revenue, second-price revenue, Competition Complexity and named instances."""
