"""Service layer: FastAPI app, pydantic schemas, HTTP client."""
