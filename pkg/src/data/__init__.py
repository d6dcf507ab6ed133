# Masked RBM Toolkit - Data Package
