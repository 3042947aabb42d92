"""
Command-line front end: experiment configs in, CSV reports out.
"""
