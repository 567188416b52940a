"""Boundary-integral band structures of honeycomb obstacle lattices."""
