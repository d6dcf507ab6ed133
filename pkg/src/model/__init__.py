# Masked RBM Toolkit - Model Package
