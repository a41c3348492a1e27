"""Policy transfer between physically similar contexts through dimensionless scaling."""
