# Masked RBM Toolkit - Main Package
