from fastapi import FastAPI

from shop.api import carts, orders, products


def create_app(settings) -> FastAPI:
    app = FastAPI(title="shop")
    app.state.settings = settings
    app.include_router(products.router)
    app.include_router(carts.router)
    app.include_router(orders.router)
    return app
