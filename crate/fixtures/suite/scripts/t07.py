j = geo.overlay(brunnen, stadtkreise, predicate="within")
print(len(j), j.columns)
def trinkwasser_wiedikon(r):
    return r["wasserart"] == "Trinkwasser" and r["kreisname"] == "Wiedikon"
n = len(frame.filter(j, trinkwasser_wiedikon))
final_answer(f"Im Stadtkreis Wiedikon stehen {n} Trinkwasserbrunnen.")
