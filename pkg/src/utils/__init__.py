# Masked RBM Toolkit - Utils Package
