"""Holstein-Hubbard charge-density-wave toolkit: exact diagonalization,
Lang-Firsov checks, space-time contour activities and Peierls-bound audits."""

__version__ = "0.1.0"
