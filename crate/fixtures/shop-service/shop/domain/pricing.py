from decimal import Decimal


def apply_discount(amount: Decimal, percent: int) -> Decimal:
    return (amount * (100 - percent) / 100).quantize(Decimal("0.01"))
