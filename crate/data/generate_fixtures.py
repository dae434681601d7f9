"""Regenerates the synthetic fixtures in this directory.

The session files imitate the shape of Adaptive Charging Network workplace
sessions (morning arrivals, afternoon departures, 5-25 kWh requests). The
price file imitates a CAISO day-ahead curve: cheap around solar noon, an
evening peak, moderate overnight. None of it is real data.
"""

import csv
import math
import random
from datetime import datetime, timedelta, timezone

WEEK = datetime(2019, 5, 6, tzinfo=timezone.utc)  # a Monday


def iso(t):
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def max_concurrent(rows):
    edges = []
    for r in rows:
        edges.append((r[1], 1))
        edges.append((r[2], -1))
    edges.sort(key=lambda e: (e[0], e[1]))
    cur = best = 0
    for _, d in edges:
        cur += d
        best = max(best, cur)
    return best


def week(seed, per_day, limit, days):
    rng = random.Random(seed)
    rows = []
    n = 0
    for day in days:
        base = WEEK + timedelta(days=day)
        tries = 0
        made = 0
        while made < per_day and tries < 500:
            tries += 1
            arr = base + timedelta(minutes=rng.randrange(7 * 60, 10 * 60, 5))
            dep = base + timedelta(minutes=rng.randrange(14 * 60, 19 * 60, 5))
            kwh = round(rng.uniform(5.0, 25.0), 2)
            cand = (f"S{n + 1:03d}", arr, dep, kwh, f"CA-{300 + rng.randrange(1, 60)}")
            if max_concurrent(rows + [cand]) > limit:
                continue
            rows.append(cand)
            n += 1
            made += 1
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    return [(f"S{k + 1:03d}",) + r[1:] for k, r in enumerate(rows)]


def write_sessions(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["session_id", "connection_time", "disconnect_time", "kwh_requested", "space_id", "minutes_available"])
        for sid, arr, dep, kwh, space in rows:
            w.writerow([sid, iso(arr), iso(dep), f"{kwh:.2f}", space, int((dep - arr).total_seconds() // 60)])


def price(hour_of_week):
    day, h = divmod(hour_of_week, 24)
    solar = max(0.0, math.cos((h - 12.5) / 5.0 * math.pi / 2)) if 7 <= h <= 18 else 0.0
    evening = math.exp(-((h - 19.0) ** 2) / 4.0)
    morning = math.exp(-((h - 7.5) ** 2) / 2.0)
    weekend = 0.85 if day >= 5 else 1.0
    p = 0.040 + 0.055 * evening + 0.012 * morning - 0.034 * solar
    p *= weekend * (1.0 + 0.06 * math.sin(1.7 * day + h / 5.0))
    return max(0.004, round(p, 5))


def write_prices(path, days):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["timestamp", "price_usd_per_kwh"])
        for k in range(days * 24):
            w.writerow([iso(WEEK + timedelta(hours=k)), f"{price(k):.5f}"])


def main():
    low = week(seed=7, per_day=6, limit=4, days=[0, 1, 2, 3, 4, 5])
    assert max_concurrent(low) <= 4
    write_sessions("sessions_low_density.csv", low)
    high = week(seed=11, per_day=22, limit=14, days=[0, 1, 2, 3, 4])
    write_sessions("sessions_high_density.csv", high)
    golden = low[:5]
    write_sessions("sessions_golden.csv", golden)
    write_prices("prices_caiso_like.csv", days=9)
    print(len(low), max_concurrent(low), len(high), max_concurrent(high), len(golden))


if __name__ == "__main__":
    main()
