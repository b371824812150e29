def passt(r):
    return r["kreis"] == 3 and r["jahr"] == 2024
zeile = frame.filter(bevoelkerung_kreis, passt)[0]
final_answer(f"Der Stadtkreis Wiedikon hatte 2024 {zeile['einwohner']} Einwohner.")
