"""Edge transport and topology of two-dimensional lattice fermions.

Modules: ``lattice`` (models), ``spectral`` (cylinder spectra, edge states),
``topology`` (Chern numbers), ``response`` (correlators, Ward identities,
transport), ``reference_model`` (chiral Luttinger formulas), ``ed_oracle``
(exact diagonalization), ``rg_audit`` (multiscale bookkeeping) and ``cli``.
"""

__version__ = "0.1.0"
