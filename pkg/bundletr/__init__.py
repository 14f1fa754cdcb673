# Nonsmooth trust-region bundle solver package
