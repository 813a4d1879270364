"""Finite elements for PDEs on moving surfaces and domains.

Evolving-surface P1 discretizations with structure-preserving
postprocessing, ALE mesh redistribution, stabilized advection-diffusion-
reaction transport, Cahn-Hilliard phase separation, and Helfrich/Willmore
geometric flows.
"""

__version__ = "0.1.0"
