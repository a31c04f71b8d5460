//! Synthetic spreadsheets: template families with jittered variants, the
//! two-sheet COUNTIF walkthrough fixture, and random formula text.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{column_label, Cell, CellAddress, Rgb, Sheet, Style, ValueType, Workbook};

/// One sheet template. Logical columns are fixed: label, category, three
/// inputs, two per-row formulas, notes, date, status.
struct Family {
    title: &'static str,
    notes_sheet: &'static str,
    data_sheet: &'static str,
    headers: [&'static str; 10],
    labels: &'static [&'static str],
    categories: &'static [&'static str],
    /// Per-row formula patterns over logical columns `{C}`, `{D}`, `{E}`,
    /// `{F}` and the row `{r}`.
    row_formulas: [&'static str; 2],
    totals: [&'static str; 3],
    summary: &'static str,
    base_rows: u32,
    color: Rgb,
    range: (f64, f64),
}

const STATUS: [&str; 3] = ["Open", "Closed", "Pending"];

const FAMILIES: [Family; 10] = [
    Family {
        title: "Expense Report",
        notes_sheet: "Expense Notes",
        data_sheet: "Expense Log",
        headers: ["Item", "Category", "Qty", "Unit Cost", "Tax", "Amount", "Net", "Notes", "Date", "Status"],
        labels: &["Rent", "Utilities", "Travel", "Meals", "Supplies", "Software", "Hardware", "Training", "Insurance", "Marketing", "Legal", "Postage"],
        categories: &["Fixed", "Variable", "Capital", "Other"],
        row_formulas: ["={C}{r}*{D}{r}", "={F}{r}-{E}{r}"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 24,
        color: [31, 78, 121],
        range: (1.0, 500.0),
    },
    Family {
        title: "Inventory",
        notes_sheet: "Stock Guide",
        data_sheet: "Stock Levels",
        headers: ["Product", "Warehouse", "On Hand", "Reorder At", "Unit Price", "Shortfall", "Value", "Supplier", "Checked", "State"],
        labels: &["Bolts", "Nuts", "Washers", "Screws", "Hinges", "Brackets", "Rivets", "Springs", "Clamps", "Pins"],
        categories: &["North", "South", "East"],
        row_formulas: ["=IF({C}{r}<{D}{r},{D}{r}-{C}{r},0)", "={C}{r}*{E}{r}"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=SUMIF({B}{first}:{B}{last},{B}{row},{C}{first}:{C}{last})",
        base_rows: 30,
        color: [84, 130, 53],
        range: (0.0, 200.0),
    },
    Family {
        title: "Gradebook",
        notes_sheet: "Grading Policy",
        data_sheet: "Scores",
        headers: ["Student", "Section", "Quiz", "Midterm", "Final", "Average", "Best", "Comments", "Updated", "Standing"],
        labels: &["Adams", "Baker", "Clark", "Davis", "Evans", "Foster", "Garcia", "Harris", "Irwin", "Jones", "King", "Lopez", "Moore", "Nash"],
        categories: &["A", "B", "C", "D"],
        row_formulas: ["=AVERAGE({C}{r}:{E}{r})", "=MAX({C}{r},{D}{r},{E}{r})"],
        totals: ["AVERAGE", "AVERAGE", "MAX"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 36,
        color: [112, 48, 160],
        range: (40.0, 100.0),
    },
    Family {
        title: "Sales Pipeline",
        notes_sheet: "Sales Readme",
        data_sheet: "Deals",
        headers: ["Account", "Region", "Units", "Price", "Discount", "Revenue", "Margin", "Owner", "Close Date", "Stage"],
        labels: &["Acme", "Globex", "Initech", "Umbrella", "Hooli", "Stark", "Wayne", "Wonka", "Tyrell", "Cyberdyne", "Soylent"],
        categories: &["EMEA", "APAC", "AMER"],
        row_formulas: ["={C}{r}*{D}{r}*(1-{E}{r}/100)", "=ROUND({F}{r}*0.3,2)"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=SUMIF({B}{first}:{B}{last},{B}{row},{F}{first}:{F}{last})",
        base_rows: 28,
        color: [197, 90, 17],
        range: (1.0, 90.0),
    },
    Family {
        title: "Payroll",
        notes_sheet: "Payroll Instructions",
        data_sheet: "Pay Run",
        headers: ["Employee", "Department", "Hours", "Rate", "Overtime", "Gross", "Take Home", "Bank", "Paid On", "Type"],
        labels: &["Alvarez", "Brooks", "Chen", "Diaz", "Ellis", "Fischer", "Gupta", "Hughes", "Ito", "Jensen", "Khan", "Lee", "Meyer"],
        categories: &["Ops", "Finance", "IT", "HR"],
        row_formulas: ["={C}{r}*{D}{r}+{E}{r}*{D}{r}*1.5", "={F}{r}*0.78"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 40,
        color: [0, 112, 192],
        range: (5.0, 60.0),
    },
    Family {
        title: "Attendance Tracker",
        notes_sheet: "Attendance Key",
        data_sheet: "Roll Call",
        headers: ["Member", "Team", "Present", "Absent", "Late", "Rate", "Flag", "Remarks", "Week Of", "Active"],
        labels: &["Ava", "Ben", "Cleo", "Dan", "Eli", "Fay", "Gus", "Hana", "Ivan", "Jade", "Kai", "Lena", "Milo", "Nora", "Owen"],
        categories: &["Red", "Blue", "Green"],
        row_formulas: ["={C}{r}/({C}{r}+{D}{r})", "=IF({F}{r}<0.8,\"LOW\",\"OK\")"],
        totals: ["SUM", "AVERAGE", "COUNTA"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 32,
        color: [255, 192, 0],
        range: (0.0, 20.0),
    },
    Family {
        title: "Project Budget",
        notes_sheet: "Budget Assumptions",
        data_sheet: "Cost Plan",
        headers: ["Task", "Phase", "Days", "Day Rate", "Materials", "Cost", "Contingency", "Lead", "Due", "Progress"],
        labels: &["Survey", "Design", "Permits", "Foundation", "Framing", "Roofing", "Wiring", "Plumbing", "Drywall", "Painting", "Flooring", "Cleanup"],
        categories: &["Plan", "Build", "Finish"],
        row_formulas: ["={C}{r}*{D}{r}+{E}{r}", "=ROUND({F}{r}*1.1,0)"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=SUMIF({B}{first}:{B}{last},{B}{row},{F}{first}:{F}{last})",
        base_rows: 20,
        color: [128, 0, 0],
        range: (1.0, 300.0),
    },
    Family {
        title: "Order Book",
        notes_sheet: "Order Terms",
        data_sheet: "Orders",
        headers: ["Order", "Channel", "Quantity", "List Price", "Shipping", "Subtotal", "Total", "Customer", "Ordered", "Fulfilled"],
        labels: &["PO-1001", "PO-1002", "PO-1003", "PO-1004", "PO-1005", "PO-1006", "PO-1007", "PO-1008", "PO-1009", "PO-1010"],
        categories: &["Web", "Store", "Phone"],
        row_formulas: ["={C}{r}*{D}{r}", "={F}{r}+{E}{r}"],
        totals: ["SUM", "SUM", "SUM"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 44,
        color: [0, 176, 80],
        range: (1.0, 150.0),
    },
    Family {
        title: "Survey Results",
        notes_sheet: "Survey Questions",
        data_sheet: "Responses",
        headers: ["Question", "Group", "Agree", "Neutral", "Disagree", "Score", "Share", "Comment", "Closed", "Included"],
        labels: &["Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7", "Q8", "Q9", "Q10", "Q11", "Q12", "Q13"],
        categories: &["Staff", "Managers"],
        row_formulas: ["={C}{r}-{E}{r}", "={C}{r}/SUM({C}{r}:{E}{r})"],
        totals: ["SUM", "SUM", "AVERAGE"],
        summary: "=COUNTIF({B}{first}:{B}{last},{B}{row})",
        base_rows: 26,
        color: [68, 84, 106],
        range: (0.0, 80.0),
    },
    Family {
        title: "Fleet Log",
        notes_sheet: "Fleet Policy",
        data_sheet: "Trips",
        headers: ["Vehicle", "Depot", "Start Km", "End Km", "Fuel", "Distance", "Efficiency", "Driver", "Trip Date", "Purpose"],
        labels: &["Van 1", "Van 2", "Van 3", "Truck 1", "Truck 2", "Car 1", "Car 2", "Car 3", "Bus 1", "Bike 1", "Bike 2"],
        categories: &["Central", "Harbor", "Airport"],
        row_formulas: ["={D}{r}-{C}{r}", "=IF({E}{r}>0,{F}{r}/{E}{r},0)"],
        totals: ["SUM", "SUM", "AVERAGE"],
        summary: "=SUMIF({B}{first}:{B}{last},{B}{row},{F}{first}:{F}{last})",
        base_rows: 34,
        color: [191, 143, 0],
        range: (10.0, 400.0),
    },
];

/// Number of built-in sheet families.
pub const FAMILY_COUNT: usize = FAMILIES.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub families: usize,
    pub variants: usize,
    pub seed: u64,
    /// Fractional bound on row and column jitter.
    pub jitter: f64,
    pub row_formulas: bool,
    pub notes_sheet: bool,
    /// Overrides every family's base data-row count.
    pub base_rows: Option<u32>,
    /// Categories listed in the summary block (capped by the family).
    pub summary_rows: usize,
    /// Chance that a data value differs from the family's base record.
    pub perturb: f64,
    pub base_time: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            families: FAMILY_COUNT,
            variants: 8,
            seed: 7,
            jitter: 0.1,
            row_formulas: true,
            notes_sheet: true,
            base_rows: None,
            summary_rows: usize::MAX,
            perturb: 0.3,
            base_time: 1_700_000_000,
        }
    }
}

impl SynthConfig {
    /// Many small single-sheet workbooks with five formulas each.
    pub fn latency(workbooks: usize, seed: u64) -> Self {
        SynthConfig {
            families: FAMILY_COUNT,
            variants: workbooks.div_ceil(FAMILY_COUNT),
            seed,
            row_formulas: false,
            notes_sheet: false,
            base_rows: Some(12),
            summary_rows: 2,
            ..Default::default()
        }
    }
}

/// Builds `families × variants` workbooks. Within a family, the newest
/// variant has index `variants - 1`; timestamps increase with the variant.
pub fn synthetic_corpus(cfg: &SynthConfig) -> Vec<Workbook> {
    let mut out = Vec::with_capacity(cfg.families * cfg.variants);
    for v in 0..cfg.variants {
        for f in 0..cfg.families {
            let fam = &FAMILIES[f % FAMILY_COUNT];
            let seed = cfg.seed ^ ((f as u64) << 32) ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sheets = Vec::new();
            if cfg.notes_sheet {
                sheets.push(notes_sheet(fam, &mut rng));
            }
            sheets.push(data_sheet(fam, f as u64, cfg, &mut rng));
            out.push(Workbook {
                id: format!("f{f:02}-v{v:04}"),
                sheets,
                last_modified: cfg.base_time + v as i64 * 86_400 + f as i64 * 60,
            });
        }
    }
    out
}

fn style(color: Rgb, font: Rgb, bold: bool, size: f64) -> Style {
    Style {
        bg_color: color,
        font_color: font,
        bold,
        font_size: size,
        ..Style::plain()
    }
}

fn text(s: &mut Sheet, row: u32, col: u32, v: &str, st: Style) {
    s.insert(Cell::new(CellAddress::new(row, col), v, ValueType::Text).with_style(st));
}

fn number(s: &mut Sheet, row: u32, col: u32, v: f64, st: Style) {
    s.insert(Cell::new(CellAddress::new(row, col), fmt_num(v), ValueType::Numeric).with_style(st));
}

fn fmt_num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

fn notes_sheet(fam: &Family, rng: &mut ChaCha8Rng) -> Sheet {
    let mut s = Sheet::new(fam.notes_sheet);
    text(&mut s, 1, 1, fam.title, style([255, 255, 255], fam.color, true, 16.0));
    let lines = [
        "Fill in one row per entry.",
        "Do not edit the shaded header row.",
        "Totals and summaries update automatically.",
        "Contact the owner before adding columns.",
    ];
    for (i, l) in lines.iter().enumerate().take(rng.random_range(2..=lines.len())) {
        text(&mut s, 3 + i as u32, 1, l, Style::plain());
    }
    s
}

/// Values of one data row before per-variant perturbation.
struct RowRecord {
    category: &'static str,
    inputs: [f64; 3],
    extra: [f64; 2],
    flagged: bool,
    status: &'static str,
}

fn base_row(fam: &Family, seed: u64, i: u32) -> RowRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let (lo, hi) = fam.range;
    RowRecord {
        category: fam.categories.choose(&mut rng).unwrap(),
        inputs: [
            rng.random_range(lo..hi).round(),
            rng.random_range(lo..hi).round(),
            rng.random_range(0.0..hi / 4.0).round(),
        ],
        extra: [rng.random_range(lo..hi).round(), rng.random_range(lo..hi).round()],
        flagged: rng.random_bool(0.3),
        status: STATUS.choose(&mut rng).unwrap(),
    }
}

impl RowRecord {
    /// Each field independently changes with probability `p`; numbers move
    /// by up to 20%.
    fn perturbed(mut self, fam: &Family, p: f64, rng: &mut ChaCha8Rng) -> Self {
        if rng.random_bool(p) {
            self.category = fam.categories.choose(rng).unwrap();
        }
        for v in self.inputs.iter_mut().chain(self.extra.iter_mut()) {
            if rng.random_bool(p) {
                *v = (*v * rng.random_range(0.8..1.2)).round();
            }
        }
        if rng.random_bool(p) {
            self.flagged = !self.flagged;
        }
        if rng.random_bool(p) {
            self.status = STATUS.choose(rng).unwrap();
        }
        self
    }
}

/// Sheet column of each logical column after an optional inserted column.
fn column_map(insert_at: Option<u32>) -> [u32; 10] {
    let mut m = [0; 10];
    for (i, c) in m.iter_mut().enumerate() {
        let base = i as u32 + 1;
        *c = match insert_at {
            Some(at) if base >= at => base + 1,
            _ => base,
        };
    }
    m
}

fn fill(pattern: &str, cols: &[u32; 10], vars: &[(&str, u32)]) -> String {
    let mut out = pattern.to_string();
    for (i, key) in ["{A}", "{B}", "{C}", "{D}", "{E}", "{F}", "{G}"].iter().enumerate() {
        out = out.replace(key, &column_label(cols[i]));
    }
    for (k, v) in vars {
        out = out.replace(k, &v.to_string());
    }
    out
}

fn data_sheet(fam: &Family, family: u64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Sheet {
    let base = cfg.base_rows.unwrap_or(fam.base_rows);
    let spread = (base as f64 * cfg.jitter).floor() as i64;
    let n = (base as i64 + rng.random_range(-spread..=spread)).max(2) as u32;
    // One extra column in ten stays within the jitter bound.
    let insert_at = (cfg.jitter >= 0.1 && rng.random_bool(0.25)).then(|| rng.random_range(2..=8u32));
    let cols = column_map(insert_at);

    let mut s = Sheet::new(fam.data_sheet);
    let header = style(fam.color, [255, 255, 255], true, 11.0);
    let plain = Style::plain();
    let bold = style([255, 255, 255], [0, 0, 0], true, 11.0);
    let months = ["January", "February", "March", "April", "May", "June"];
    text(&mut s, 1, 1, fam.title, style([255, 255, 255], fam.color, true, 14.0));
    text(&mut s, 2, 1, &format!("Period: {}", months.choose(rng).unwrap()), style([255, 255, 255], [89, 89, 89], false, 10.0));
    for (i, h) in fam.headers.iter().enumerate() {
        text(&mut s, 3, cols[i], h, header);
    }
    if let Some(at) = insert_at {
        text(&mut s, 3, at, "Code", header);
    }

    let first = 4;
    let last = first + n - 1;
    let (lo, hi) = fam.range;
    let mut cats = Vec::with_capacity(n as usize);
    for i in 0..n {
        let r = first + i;
        let label = match fam.labels.get(i as usize) {
            Some(l) => l.to_string(),
            None => format!("{} {}", fam.labels[i as usize % fam.labels.len()], i as usize / fam.labels.len() + 1),
        };
        text(&mut s, r, cols[0], &label, plain);
        let rec = base_row(fam, cfg.seed ^ (family << 40), i).perturbed(fam, cfg.perturb, rng);
        cats.push(rec.category);
        text(&mut s, r, cols[1], rec.category, plain);
        for (k, v) in rec.inputs.iter().enumerate() {
            number(&mut s, r, cols[2 + k], *v, plain);
        }
        if cfg.row_formulas {
            for (k, pat) in fam.row_formulas.iter().enumerate() {
                let f = fill(pat, &cols, &[("{r}", r)]);
                let value = rec.inputs[0] * (k as f64 + 1.0);
                s.insert(
                    Cell::new(CellAddress::new(r, cols[5 + k]), fmt_num(value), ValueType::Numeric)
                        .with_formula(f)
                        .with_style(plain),
                );
            }
        } else {
            number(&mut s, r, cols[5], rec.extra[0], plain);
            number(&mut s, r, cols[6], rec.extra[1], plain);
        }
        if rec.flagged {
            text(&mut s, r, cols[7], "check", plain);
        }
        let day = 1 + (i % 28);
        s.insert(
            Cell::new(CellAddress::new(r, cols[8]), format!("2024-{:02}-{day:02}", 1 + i % 12), ValueType::Date)
                .with_style(plain),
        );
        text(&mut s, r, cols[9], rec.status, plain);
        if let Some(at) = insert_at {
            text(&mut s, r, at, &format!("X-{:03}", rng.random_range(0..1000)), plain);
        }
    }

    let total = last + 1;
    text(&mut s, total, cols[0], "Total", bold);
    for (k, func) in fam.totals.iter().enumerate() {
        let c = [2, 5, 6][k];
        let f = format!("={func}({col}{first}:{col}{last})", col = column_label(cols[c]));
        s.insert(
            Cell::new(CellAddress::new(total, cols[c]), fmt_num(rng.random_range(lo..hi) * n as f64), ValueType::Numeric)
                .with_formula(f)
                .with_style(bold),
        );
    }

    let sh = total + 2;
    text(&mut s, sh, cols[1], fam.headers[1], header);
    text(&mut s, sh, cols[2], if fam.summary.contains("COUNTIF") { "Count" } else { "Sum" }, header);
    for (k, cat) in fam.categories.iter().take(cfg.summary_rows).enumerate() {
        let row = sh + 1 + k as u32;
        text(&mut s, row, cols[1], cat, plain);
        let f = fill(fam.summary, &cols, &[("{first}", first), ("{last}", last), ("{row}", row)]);
        let count = cats.iter().filter(|c| *c == cat).count();
        s.insert(
            Cell::new(CellAddress::new(row, cols[2]), count.to_string(), ValueType::Numeric)
                .with_formula(f)
                .with_style(plain),
        );
    }
    s
}

const ROSTER_COLORS: [&str; 4] = ["Blue", "Brown", "Green", "Red"];
const ROSTER_NAMES: [&str; 12] = [
    "Ann", "Bo", "Cy", "Di", "Ed", "Flo", "Gil", "Hal", "Ida", "Jo", "Kit", "Lou",
];

/// Roster with a header at `header`, `n` data rows and a colour summary whose
/// Brown row sits four rows after the data. Formulas are written only when
/// `with_formulas` is set.
fn roster_sheet(name: &str, title_row: u32, header: u32, n: u32, seed: u64, with_formulas: bool) -> Sheet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Sheet::new(name);
    let head = style([47, 84, 150], [255, 255, 255], true, 11.0);
    let plain = Style::plain();
    text(&mut s, title_row, 1, "Club Roster", style([255, 255, 255], [47, 84, 150], true, 14.0));
    text(&mut s, title_row + 1, 1, "Favourite colours by member", style([255, 255, 255], [89, 89, 89], false, 10.0));
    for (c, h) in ["ID", "Name", "Color", "Points"].iter().enumerate() {
        text(&mut s, header, c as u32 + 1, h, head);
    }
    let first = header + 1;
    let last = header + n;
    for r in first..=last {
        number(&mut s, r, 1, (r - header) as f64, plain);
        text(&mut s, r, 2, ROSTER_NAMES.choose(&mut rng).unwrap(), plain);
        text(&mut s, r, 3, ROSTER_COLORS.choose(&mut rng).unwrap(), plain);
        number(&mut s, r, 4, rng.random_range(0..100) as f64, plain);
    }
    let sh = last + 2;
    text(&mut s, sh, 3, "Color", head);
    text(&mut s, sh, 4, "Count", head);
    for (k, color) in ROSTER_COLORS.iter().enumerate() {
        let row = sh + 1 + k as u32;
        text(&mut s, row, 3, color, plain);
        if with_formulas {
            s.insert(
                Cell::new(CellAddress::new(row, 4), "0", ValueType::Numeric)
                    .with_formula(format!("=COUNTIF(C{first}:C{last},C{row})"))
                    .with_style(plain),
            );
        }
    }
    s
}

/// Target of the walkthrough: data in C7:C37, the user is about to write the
/// count of "Brown" into D41.
pub fn roster_target() -> Sheet {
    roster_sheet("Roster", 2, 6, 31, 41, false)
}

/// Reference of the walkthrough: data in C6:C350 and
/// `=COUNTIF(C6:C350,C354)` in D354.
pub fn roster_reference() -> Sheet {
    roster_sheet("Roster", 1, 5, 345, 354, true)
}

pub const ROSTER_TARGET_CELL: CellAddress = CellAddress { row: 41, col: 4 };
pub const ROSTER_EXPECTED: &str = "=COUNTIF(C7:C37,C41)";

/// Hand-written formulas covering the grammar.
pub const HAND_FORMULAS: [&str; 50] = [
    "=COUNTIF(C7:C37,C41)",
    "=COUNTIF(C6:C350,C354)",
    "=SUM(A1:A10)",
    "=sum(a1:a10)",
    "=A1+B1",
    "=A1 + B1 * C1",
    "=(A1+B1)*C1",
    "=A1^2",
    "=-A1",
    "=--A1",
    "=+A1",
    "=A1%",
    "=50%",
    "=1+2*3",
    "=1-2-3",
    "=2^3^2",
    "=A1&\" units\"",
    "=\"say \"\"hi\"\"\"",
    "=A1=B1",
    "=A1<>B1",
    "=A1<=B1",
    "=A1>=B1",
    "=IF(A1>0,SUM(B1:B9),0)",
    "=IF(AND(A1>0,B1<5),\"yes\",\"no\")",
    "=IFERROR(A1/B1,0)",
    "=VLOOKUP(A2,$D$2:$F$100,3,FALSE)",
    "=INDEX(B2:B50,MATCH(E1,A2:A50,0))",
    "=SUMIF(B4:B30,B35,F4:F30)",
    "=SUMPRODUCT(C2:C20,D2:D20)",
    "=AVERAGE(C4:E4)",
    "=MAX(C4,D4,E4)",
    "=MIN(A1:A5)+MAX(B1:B5)",
    "=ROUND(C4/D4,2)",
    "=ROUND(F12*1.1,0)",
    "=COUNTA(A1:A99)",
    "=Sheet2!A1",
    "='Q1 Data'!B7*2",
    "=SUM(Sheet2!A1:A9)",
    "=$A$1*B$2+$C3",
    "=TRUE",
    "=NOT(FALSE)",
    "=1.5E+3*A1",
    "=.5*A1",
    "=TODAY()",
    "=NOW()-A1",
    "=CONCATENATE(A1,\" \",B1)",
    "=LEFT(A1,3)&RIGHT(B1,2)",
    "=IF(A1=\"\",\"\",A1*2)",
    "=AB100+ZZ9",
    "=XFD1048576",
];

const FUNCS: [&str; 12] = ["SUM", "AVERAGE", "MAX", "MIN", "COUNT", "COUNTIF", "IF", "ROUND", "IFERROR", "VLOOKUP", "ABS", "CONCATENATE"];
const OPS: [&str; 12] = ["+", "-", "*", "/", "^", "&", "=", "<>", "<", "<=", ">", ">="];

/// Random formula source text with random case and spacing.
pub fn random_formula(rng: &mut impl Rng) -> String {
    let mut out = String::from("=");
    random_expr(rng, 0, &mut out);
    out
}

fn random_ref(rng: &mut impl Rng, out: &mut String) {
    if rng.random_bool(0.1) {
        out.push_str(["Data!", "'My Sheet'!", "s2!"].choose(rng).unwrap());
    }
    if rng.random_bool(0.2) {
        out.push('$');
    }
    let col = if rng.random_bool(0.9) {
        rng.random_range(1..=26)
    } else {
        rng.random_range(27..=800)
    };
    let label = column_label(col);
    if rng.random_bool(0.3) {
        out.push_str(&label.to_lowercase());
    } else {
        out.push_str(&label);
    }
    if rng.random_bool(0.2) {
        out.push('$');
    }
    out.push_str(&rng.random_range(1..=2000u32).to_string());
}

fn space(rng: &mut impl Rng, out: &mut String) {
    if rng.random_bool(0.15) {
        out.push(' ');
    }
}

fn random_expr(rng: &mut impl Rng, depth: u32, out: &mut String) {
    let leaf = depth >= 3 || rng.random_bool(0.35);
    if leaf {
        match rng.random_range(0..10) {
            0..=4 => random_ref(rng, out),
            5 => {
                random_ref(rng, out);
                out.push(':');
                random_ref(rng, out);
            }
            6 | 7 => out.push_str(&rng.random_range(0..1000).to_string()),
            8 => out.push_str(["\"x\"", "\"\"", "\"a b\""].choose(rng).unwrap()),
            _ => out.push_str(["TRUE", "FALSE", "2.5", "1E3"].choose(rng).unwrap()),
        }
        return;
    }
    match rng.random_range(0..10) {
        0..=3 => {
            let f = FUNCS.choose(rng).unwrap();
            out.push_str(&if rng.random_bool(0.3) { f.to_lowercase() } else { f.to_string() });
            out.push('(');
            let n = rng.random_range(0..=3);
            for i in 0..n {
                if i > 0 {
                    out.push(',');
                    space(rng, out);
                }
                random_expr(rng, depth + 1, out);
            }
            out.push(')');
        }
        4..=7 => {
            random_expr(rng, depth + 1, out);
            space(rng, out);
            out.push_str(OPS.choose(rng).unwrap());
            space(rng, out);
            random_expr(rng, depth + 1, out);
        }
        8 => {
            out.push('(');
            random_expr(rng, depth + 1, out);
            out.push(')');
        }
        _ => {
            if rng.random_bool(0.5) {
                out.push('-');
                random_expr(rng, depth + 1, out);
            } else {
                random_expr(rng, depth + 1, out);
                out.push('%');
            }
        }
    }
}
