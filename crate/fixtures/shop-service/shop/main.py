import uvicorn

from shop.api.app import create_app
from shop.settings import load_settings


def main() -> None:
    settings = load_settings()
    uvicorn.run(create_app(settings), host="0.0.0.0", port=settings.port)


if __name__ == "__main__":
    main()
