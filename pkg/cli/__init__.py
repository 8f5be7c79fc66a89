"""
microtree CLI
"""
