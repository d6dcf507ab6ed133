# Masked RBM Toolkit - Eval Package
