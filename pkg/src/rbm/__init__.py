# Masked RBM Toolkit - RBM Package
