"""Truncated quantum Yukawa model: basis, Hamiltonian, propagation and limit proxies."""
