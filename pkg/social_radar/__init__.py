__author__ = """Social RADAR contributors"""
__version__ = "0.1.0"
