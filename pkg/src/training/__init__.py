# Masked RBM Toolkit - Training Package
