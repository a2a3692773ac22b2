# ABOUTME: Gaussian-process layer: decomposable Gaussian kernel, jittered Cholesky and the inducing-point vector field
# ABOUTME: Fields interpolate whitened inducing vectors with the kernel posterior mean
