def insert_order(conn, order_id: str, total) -> None:
    with conn.cursor() as cur:
        cur.execute("INSERT INTO orders (id, total) VALUES (%s, %s)", (order_id, total))
