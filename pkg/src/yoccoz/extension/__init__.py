"""Quasiconformal extension of the boundary correspondence, cell by cell."""
