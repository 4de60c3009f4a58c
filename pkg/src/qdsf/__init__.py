"""Mode densities, observables and a finite-bath oracle for a scalar field
coupled to an oscillator reservoir."""

__version__ = "0.1.0"
