# Default solver settings for hessmooth
# Every numeric routine reads its default from here; a settings file loaded
# with SettingsLoader overrides individual keys.

DEFAULT_SETTINGS = {
    "tolerances": {
        "psd": 1e-10,             # relative, xᵀQx ≥ -psd·‖Q‖‖x‖²
        "solve": 1e-10,           # relative residual of solve_spd
        "eig": 1e-8,              # eigen residual and M-orthonormality
        "rank": 1e-11,            # relative pivot treated as zero
        "degenerate_area": 1e-14, # relative to squared bbox diagonal
    },
    "solve": {
        "max_refinement": 10,
        "shift": 1e-8,            # σ = shift·mean(diag(Q))
    },
    "eigen": {
        "dense_limit": 1500,      # nodes; above this eigsh is used
        "max_iterations": 10000,
        "seed": 0,
    },
    "admm": {
        "rel_tol": 1e-6,
        "abs_tol": 1e-9,
        "max_iterations": 5000,
        "auto_rho": True,
        "rho_period": 10,
        "rho_mu": 10.0,
        "rho_tau": 2.0,
    },
    "output": {
        "heatmap_range": None,
    },
}
