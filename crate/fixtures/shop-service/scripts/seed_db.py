from shop.settings import load_settings
from shop.storage.db import connect

if __name__ == "__main__":
    with connect(load_settings().database_url) as conn:
        conn.execute("INSERT INTO products VALUES ('demo', 'Demo', 1.00)")
