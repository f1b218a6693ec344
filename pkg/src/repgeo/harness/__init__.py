"""Toy models, experiment drivers, report writers and the command line."""
