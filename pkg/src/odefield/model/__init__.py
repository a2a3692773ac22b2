# ABOUTME: The ODE model: parameters, log posterior and gradient, MAP fitting, prediction and lengthscale selection
# ABOUTME: Pure functions over numpy arrays; orchestration lives in core.service
