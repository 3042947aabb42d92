"""Dynamic mechanisms: value processes, the periodic-IC revenue LP and hand-built mechanisms."""
