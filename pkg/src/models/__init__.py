# Pydantic Models
