"""Model families: probabilistic VASS, lossy channel systems, noisy Turing machines."""
