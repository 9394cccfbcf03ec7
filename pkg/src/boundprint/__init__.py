"""Fingerprint a classifier by points near its decision boundary."""
