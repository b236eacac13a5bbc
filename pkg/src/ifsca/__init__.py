"""Certification and simulation of average contraction for iterated function systems."""
