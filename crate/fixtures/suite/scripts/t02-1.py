def passt(r):
    return r["kreis"] == 2 and r["jahr"] == 2023
zeile = frame.filter(bevoelkerung_kreis, passt)[0]
final_answer(f"Der Stadtkreis Enge hatte 2023 {zeile['einwohner']} Einwohner.")
