"""Model predictive dispatch for networks of multi-carrier energy hubs."""
