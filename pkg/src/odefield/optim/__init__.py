# ABOUTME: Unconstrained quasi-Newton optimisation
# ABOUTME: Limited-memory BFGS maximiser with a weak Wolfe line search
