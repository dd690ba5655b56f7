# Quantum Gambling Package
