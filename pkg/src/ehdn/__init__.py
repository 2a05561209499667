"""ehdn - hardening planner for electricity-hydrogen distribution networks"""

__version__ = "0.1.0"
