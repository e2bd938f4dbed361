//! Synthetic student application packages.
//!
//! Packages are structured data plus plain-text renditions that feed the
//! ingestion pipeline. Every package is a pure function of its seed.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::manifest::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("seed file: {0}")]
    Csv(#[from] csv::Error),
    #[error("seed row {row}: {reason}")]
    BadSeed { row: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Write(#[from] crate::corpus::CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchoolRecord {
    pub name: String,
    pub city: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSeed {
    pub legal_name: String,
    pub used_name: String,
    pub gender: String,
    pub race: String,
    pub ethnicity: String,
    pub languages: Vec<String>,
    pub school: SchoolRecord,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grade {
    A,
    AMinus,
    BPlus,
    B,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::A, Grade::AMinus, Grade::BPlus, Grade::B];
    pub const WEIGHTS: [f64; 4] = [0.7, 0.1, 0.1, 0.1];

    pub fn points(self) -> f64 {
        match self {
            Grade::A => 4.0,
            Grade::AMinus => 3.7,
            Grade::BPlus => 3.3,
            Grade::B => 3.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Grade::A => "A",
            Grade::AMinus => "A-",
            Grade::BPlus => "B+",
            Grade::B => "B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Course {
    pub name: String,
    pub grade: Grade,
    pub credits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub student: String,
    pub school: SchoolRecord,
    pub student_id: String,
    pub graduation_year: i32,
    pub courses: Vec<Course>,
    pub gpa: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActReport {
    pub composite: u32,
    pub english: u32,
    pub math: u32,
    pub reading: u32,
    pub science: u32,
    pub test_date: NaiveDate,
    pub candidate_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatReport {
    pub total: u32,
    pub ebrw: u32,
    pub math: u32,
    pub test_date: NaiveDate,
    pub registration_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApReport {
    pub subjects: Vec<SubjectScore>,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IbReport {
    pub subjects: Vec<SubjectScore>,
    pub core_points: u32,
    pub total_points: u32,
    pub session: String,
    pub candidate_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReports {
    pub act: Option<ActReport>,
    pub sat: Option<SatReport>,
    pub ap: Option<ApReport>,
    pub ib: Option<IbReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub award_type: String,
    pub issuer: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub activity_type: String,
    pub description: String,
    pub hours_per_week: u32,
    pub years: u32,
}

/// Contact and background answers common to general application forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Details {
    pub date_of_birth: NaiveDate,
    pub email: String,
    pub phone: String,
    pub us_citizen: bool,
    pub intended_major: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentPackage {
    pub seed: StudentSeed,
    pub details: Details,
    pub transcript: Transcript,
    pub reports: TestReports,
    pub certificate: Option<Certificate>,
    pub activity: Option<Activity>,
}

pub const COURSE_POOL: [&str; 17] = [
    "Algebra II",
    "Geometry",
    "Precalculus",
    "Calculus",
    "Statistics",
    "Biology",
    "Chemistry",
    "Physics",
    "Environmental Science",
    "English Literature",
    "English Composition",
    "World History",
    "United States History",
    "Economics",
    "Government",
    "Spanish",
    "Computer Science",
];

pub const AP_POOL: [&str; 12] = [
    "Biology",
    "Calculus AB",
    "Calculus BC",
    "Chemistry",
    "Computer Science A",
    "English Language",
    "English Literature",
    "Macroeconomics",
    "Physics 1",
    "Psychology",
    "Statistics",
    "United States History",
];

/// Weights for AP scores 1 through 5.
pub const AP_SCORE_WEIGHTS: [f64; 5] = [0.05, 0.10, 0.25, 0.30, 0.30];

pub const IB_POOL: [&str; 10] = [
    "Biology",
    "Chemistry",
    "Economics",
    "English A",
    "French B",
    "History",
    "Mathematics",
    "Physics",
    "Spanish B",
    "Visual Arts",
];

pub const AWARD_TYPES: [&str; 6] = [
    "Academic Excellence",
    "Leadership",
    "Community Service",
    "STEM Achievement",
    "Arts Achievement",
    "Athletic Achievement",
];

pub const ACTIVITY_TYPES: [(&str, &str); 6] = [
    ("Debate", "Competed in regional debate tournaments as a team member"),
    ("Community Service", "Organized weekend volunteering at the local food bank"),
    ("Robotics", "Built and programmed competition robots with the robotics club"),
    ("Science Fair", "Presented an independent research project at the county science fair"),
    ("Varsity Sports", "Played on the varsity soccer team"),
    ("Music", "Performed with the school orchestra as first violin"),
];

pub const MAJORS: [&str; 10] = [
    "Biology",
    "Computer Science",
    "Economics",
    "English",
    "History",
    "Mathematics",
    "Mechanical Engineering",
    "Music",
    "Political Science",
    "Psychology",
];

const FIRST_NAMES: [&str; 24] = [
    "Avery", "Jordan", "Maya", "Elena", "Marcus", "Priya", "Daniel", "Sofia", "Kenji", "Amara", "Lucas", "Hana",
    "Mateo", "Grace", "Omar", "Leah", "Nikhil", "Zoe", "Tariq", "Isabel", "Wen", "Chloe", "Andre", "Noor",
];
const MIDDLE_NAMES: [&str; 8] = ["Lee", "Rose", "James", "Ann", "Jay", "Marie", "Kai", "Ray"];
const LAST_NAMES: [&str; 24] = [
    "Alvarez", "Bennett", "Chen", "Dawson", "Eze", "Fischer", "Gupta", "Hale", "Ibarra", "Jensen", "Kowalski",
    "Larsen", "Moreno", "Nakamura", "Okafor", "Patel", "Quinn", "Rossi", "Sato", "Torres", "Usman", "Vance",
    "Whitaker", "Young",
];
const GENDERS: [&str; 3] = ["Female", "Male", "Nonbinary"];
const RACES: [&str; 6] = [
    "Asian",
    "Black or African American",
    "White",
    "American Indian or Alaska Native",
    "Native Hawaiian or Other Pacific Islander",
    "Two or More Races",
];
const ETHNICITIES: [&str; 2] = ["Hispanic or Latino", "Not Hispanic or Latino"];
const SECOND_LANGUAGES: [&str; 7] = ["Spanish", "Mandarin", "Hindi", "French", "Korean", "Vietnamese", "Arabic"];
const SCHOOLS: [(&str, &str, &str); 8] = [
    ("Lincoln Heights High School", "Springfield", "IL"),
    ("Cedar Valley High School", "Cedar Rapids", "IA"),
    ("Harborview Academy", "Tacoma", "WA"),
    ("Mesa Ridge High School", "Tucson", "AZ"),
    ("Riverside Preparatory School", "Richmond", "VA"),
    ("Pine Hollow High School", "Asheville", "NC"),
    ("Lakeshore High School", "Duluth", "MN"),
    ("Bayfront Charter School", "Corpus Christi", "TX"),
];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().expect("non-empty pool")
}

fn fictional_id<R: Rng>(rng: &mut R) -> String {
    format!("SYN-{:08}", rng.random_range(0..100_000_000u32))
}

/// A seed drawn from the bundled name and school lists.
pub fn sample_seed(rng_seed: u64) -> StudentSeed {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_5eed_5eed_5eed);
    let first = pick(&mut rng, &FIRST_NAMES);
    let middle = pick(&mut rng, &MIDDLE_NAMES);
    let last = pick(&mut rng, &LAST_NAMES);
    let mut languages = vec!["English".to_owned()];
    if rng.random_bool(0.5) {
        languages.push(pick(&mut rng, &SECOND_LANGUAGES).to_owned());
    }
    let (name, city, state) = *SCHOOLS.choose(&mut rng).expect("schools");
    StudentSeed {
        legal_name: format!("{first} {middle} {last}"),
        used_name: first.to_owned(),
        gender: pick(&mut rng, &GENDERS).to_owned(),
        race: pick(&mut rng, &RACES).to_owned(),
        ethnicity: pick(&mut rng, &ETHNICITIES).to_owned(),
        languages,
        school: SchoolRecord { name: name.into(), city: city.into(), state: state.into() },
        rng_seed,
    }
}

#[derive(Debug, Deserialize)]
struct SeedRow {
    legal_name: String,
    used_name: String,
    gender: String,
    race: String,
    ethnicity: String,
    languages: String,
    school_name: String,
    school_city: String,
    school_state: String,
}

/// Reads seed rows; row `i` gets rng seed `base_seed + i`. Languages are
/// separated by `;`.
pub fn read_seed_csv(reader: impl Read, base_seed: u64) -> Result<Vec<StudentSeed>, SynthError> {
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize::<SeedRow>().enumerate() {
        let r = row?;
        let required = [
            ("legal_name", &r.legal_name),
            ("used_name", &r.used_name),
            ("school_name", &r.school_name),
            ("school_city", &r.school_city),
            ("school_state", &r.school_state),
        ];
        if let Some((col, _)) = required.iter().find(|(_, v)| v.trim().is_empty()) {
            return Err(SynthError::BadSeed { row: i + 1, reason: format!("empty {col}") });
        }
        out.push(StudentSeed {
            legal_name: r.legal_name.trim().into(),
            used_name: r.used_name.trim().into(),
            gender: r.gender.trim().into(),
            race: r.race.trim().into(),
            ethnicity: r.ethnicity.trim().into(),
            languages: r.languages.split(';').map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
            school: SchoolRecord {
                name: r.school_name.trim().into(),
                city: r.school_city.trim().into(),
                state: r.school_state.trim().into(),
            },
            rng_seed: base_seed.wrapping_add(i as u64),
        });
    }
    Ok(out)
}

/// Credit-weighted mean of grade points, rounded half-up to 2 decimals.
pub fn compute_gpa(courses: &[Course]) -> f64 {
    let credits: f64 = courses.iter().map(|c| c.credits).sum();
    if credits <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = courses.iter().map(|c| c.grade.points() * c.credits).sum();
    // The epsilon keeps exact halves such as 3.675 from rounding down after
    // binary representation error.
    ((weighted / credits) * 100.0 + 0.5 + 1e-9).floor() / 100.0
}

fn date_in_year<R: Rng>(rng: &mut R, year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, rng.random_range(1..=12), rng.random_range(1..=28)).expect("valid day")
}

fn step10<R: Rng>(rng: &mut R, lo: u32, hi: u32) -> u32 {
    rng.random_range(lo / 10..=hi / 10) * 10
}

/// Builds the full package for one seed.
pub fn generate_package(seed: &StudentSeed) -> StudentPackage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rng_seed);
    let graduation_year = rng.random_range(2018..=2025);

    let grade_dist = WeightedIndex::new(Grade::WEIGHTS).expect("static weights");
    let courses: Vec<Course> = COURSE_POOL
        .choose_multiple(&mut rng, 8)
        .map(|name| Course {
            name: (*name).to_owned(),
            grade: Grade::ALL[grade_dist.sample(&mut rng)],
            credits: *[0.5, 1.0].choose(&mut rng).expect("credits"),
        })
        .collect();
    let transcript = Transcript {
        student: seed.legal_name.clone(),
        school: seed.school.clone(),
        student_id: format!("{:06}", rng.random_range(100_000..1_000_000u32)),
        graduation_year,
        gpa: compute_gpa(&courses),
        courses,
    };

    let composite = rng.random_range(20..=36);
    let section = |rng: &mut ChaCha8Rng| (composite as i32 + rng.random_range(-3..=3)).clamp(18, 36) as u32;
    let act = ActReport {
        composite,
        english: section(&mut rng),
        math: section(&mut rng),
        reading: section(&mut rng),
        science: section(&mut rng),
        test_date: date_in_year(&mut rng, graduation_year - 1),
        candidate_id: fictional_id(&mut rng),
    };

    // Total first, then a split that keeps both sections in range.
    let total = step10(&mut rng, 1000, 1600);
    let lo = total.saturating_sub(800).max(400);
    let hi = (total - 400).min(800);
    let ebrw = step10(&mut rng, lo, hi);
    let sat = SatReport {
        total,
        ebrw,
        math: total - ebrw,
        test_date: date_in_year(&mut rng, graduation_year - 1),
        registration_id: fictional_id(&mut rng),
    };

    let ap_dist = WeightedIndex::new(AP_SCORE_WEIGHTS).expect("static weights");
    let ap_count = rng.random_range(4..=6);
    let ap = ApReport {
        subjects: AP_POOL
            .choose_multiple(&mut rng, ap_count)
            .map(|s| SubjectScore { subject: (*s).to_owned(), score: ap_dist.sample(&mut rng) as u32 + 1 })
            .collect(),
        year: graduation_year - 1,
    };

    let ib_subjects: Vec<SubjectScore> = IB_POOL
        .choose_multiple(&mut rng, 6)
        .map(|s| SubjectScore { subject: (*s).to_owned(), score: rng.random_range(1..=7) })
        .collect();
    let core_points = rng.random_range(0..=3);
    let ib = IbReport {
        total_points: ib_subjects.iter().map(|s| s.score).sum::<u32>() + core_points,
        subjects: ib_subjects,
        core_points,
        session: format!("May {graduation_year}"),
        candidate_id: fictional_id(&mut rng),
    };

    let certificate = Certificate {
        award_type: pick(&mut rng, &AWARD_TYPES).to_owned(),
        issuer: seed.school.name.clone(),
        date: date_in_year(&mut rng, graduation_year - 1),
    };
    let (activity_type, description) = *ACTIVITY_TYPES.choose(&mut rng).expect("activities");
    let activity = Activity {
        activity_type: activity_type.into(),
        description: format!("{description}."),
        hours_per_week: rng.random_range(2..=15),
        years: rng.random_range(1..=4),
    };

    let slug = |s: &str| s.to_lowercase().chars().filter(char::is_ascii_alphanumeric).collect::<String>();
    let mut name_parts = seed.legal_name.split_whitespace();
    let first = name_parts.next().unwrap_or("student");
    let last = seed.legal_name.split_whitespace().last().unwrap_or("student");
    let details = Details {
        date_of_birth: date_in_year(&mut rng, graduation_year - 18),
        email: format!("{}.{}{:02}@example.com", slug(first), slug(last), rng.random_range(0..100)),
        phone: format!("{}-555-01{:02}", rng.random_range(201..=989), rng.random_range(0..100)),
        us_citizen: rng.random_bool(0.8),
        intended_major: pick(&mut rng, &MAJORS).to_owned(),
    };

    StudentPackage {
        seed: seed.clone(),
        details,
        transcript,
        reports: TestReports { act: Some(act), sat: Some(sat), ap: Some(ap), ib: Some(ib) },
        certificate: Some(certificate),
        activity: Some(activity),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageReport {
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Completeness, range and consistency checks.
pub fn validate_package(pkg: &StudentPackage) -> PackageReport {
    let mut f: Vec<String> = Vec::new();
    let mut range = |ok: bool, name: &str| {
        if !ok {
            f.push(format!("range:{name}"));
        }
    };
    let t = &pkg.transcript;
    range((2018..=2025).contains(&t.graduation_year), "graduation_year");
    range(t.student_id.len() == 6 && t.student_id.bytes().all(|b| b.is_ascii_digit()), "student_id");
    range(t.courses.len() == 8, "course_count");
    range(t.courses.iter().all(|c| COURSE_POOL.contains(&c.name.as_str())), "course_pool");
    range(t.courses.iter().map(|c| &c.name).collect::<BTreeSet<_>>().len() == t.courses.len(), "course_unique");
    range(t.courses.iter().all(|c| c.credits > 0.0), "credits");
    range((0.0..=4.0).contains(&t.gpa), "gpa");
    let id_ok = |id: &str| id.strip_prefix("SYN-").is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
    match &pkg.reports.act {
        None => f.push("missing_report:act".into()),
        Some(a) => {
            let mut range = |ok: bool, name: &str| {
                if !ok {
                    f.push(format!("range:{name}"));
                }
            };
            range((20..=36).contains(&a.composite), "act.composite");
            for (name, v) in [("english", a.english), ("math", a.math), ("reading", a.reading), ("science", a.science)] {
                range((18..=36).contains(&v), &format!("act.{name}"));
            }
            range(id_ok(&a.candidate_id), "act.candidate_id");
        }
    }
    match &pkg.reports.sat {
        None => f.push("missing_report:sat".into()),
        Some(s) => {
            if !(1000..=1600).contains(&s.total) {
                f.push("range:sat.total".into());
            }
            if !(400..=800).contains(&s.ebrw) {
                f.push("range:sat.ebrw".into());
            }
            if !(400..=800).contains(&s.math) {
                f.push("range:sat.math".into());
            }
            if s.ebrw + s.math != s.total {
                f.push("sat_sum_mismatch".into());
            }
            if !id_ok(&s.registration_id) {
                f.push("range:sat.registration_id".into());
            }
        }
    }
    match &pkg.reports.ap {
        None => f.push("missing_report:ap".into()),
        Some(a) => {
            if !(4..=6).contains(&a.subjects.len()) {
                f.push("range:ap.subject_count".into());
            }
            if a.subjects.iter().any(|s| !(1..=5).contains(&s.score)) {
                f.push("range:ap.score".into());
            }
        }
    }
    match &pkg.reports.ib {
        None => f.push("missing_report:ib".into()),
        Some(i) => {
            if i.subjects.iter().any(|s| !(1..=7).contains(&s.score)) {
                f.push("range:ib.score".into());
            }
            if i.subjects.iter().map(|s| s.score).sum::<u32>() + i.core_points != i.total_points {
                f.push("ib_total_mismatch".into());
            }
            if !id_ok(&i.candidate_id) {
                f.push("range:ib.candidate_id".into());
            }
        }
    }
    if pkg.certificate.as_ref().is_none_or(|c| !AWARD_TYPES.contains(&c.award_type.as_str())) {
        f.push(if pkg.certificate.is_none() { "missing_certificate" } else { "range:certificate.award_type" }.into());
    }
    match &pkg.activity {
        None => f.push("missing_activity".into()),
        Some(a) => {
            if !(2..=15).contains(&a.hours_per_week) || !(1..=4).contains(&a.years) {
                f.push("range:activity".into());
            }
        }
    }
    if (compute_gpa(&t.courses) - t.gpa).abs() > 0.005 {
        f.push("gpa_inconsistent".into());
    }
    PackageReport { passed: f.is_empty(), failures: f }
}

fn us_date(d: NaiveDate) -> String {
    format!("{:02}/{:02}/{}", d.month(), d.day(), d.year())
}

fn yes_no(b: bool) -> &'static str {
    if b { "Yes" } else { "No" }
}

/// Plain-text renditions, one per document, named by their place in the
/// package directory. Every labelled fact line appears exactly once.
pub fn render_package_text(pkg: &StudentPackage) -> Vec<(String, String)> {
    let s = &pkg.seed;
    let d = &pkg.details;
    let mut docs = Vec::new();

    let profile = [
        "# Profile".to_owned(),
        format!("Legal Name: {}", s.legal_name),
        format!("Preferred Name: {}", s.used_name),
        format!("Gender: {}", s.gender),
        format!("Race: {}", s.race),
        format!("Ethnicity: {}", s.ethnicity),
        format!("Languages Spoken: {}", s.languages.join(", ")),
        format!("High School: {}", s.school.name),
        format!("High School City: {}", s.school.city),
        format!("High School State: {}", s.school.state),
        format!("Date of Birth: {}", us_date(d.date_of_birth)),
        format!("Email Address: {}", d.email),
        format!("Phone Number: {}", d.phone),
        format!("US Citizen: {}", yes_no(d.us_citizen)),
        format!("Intended Major: {}", d.intended_major),
    ];
    docs.push(("profile.txt".to_owned(), profile.join("\n")));

    let t = &pkg.transcript;
    let mut transcript = vec![
        "# Transcript".to_owned(),
        format!("Student ID: {}", t.student_id),
        format!("Graduation Year: {}", t.graduation_year),
        format!("Courses Taken: {}", t.courses.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")),
        "## Courses".to_owned(),
    ];
    transcript.extend(t.courses.iter().map(|c| format!("{}: {}, {:.1} credits", c.name, c.grade.label(), c.credits)));
    transcript.push(format!("Cumulative GPA: {:.2}", t.gpa));
    docs.push(("transcript/transcript.txt".to_owned(), transcript.join("\n")));

    if let Some(a) = &pkg.reports.act {
        let lines = [
            "# ACT Results".to_owned(),
            format!("ACT Test Date: {}", us_date(a.test_date)),
            format!("ACT Candidate ID: {}", a.candidate_id),
            format!("ACT Composite: {}", a.composite),
            format!("ACT English: {}", a.english),
            format!("ACT Math: {}", a.math),
            format!("ACT Reading: {}", a.reading),
            format!("ACT Science: {}", a.science),
        ];
        docs.push(("reports/act.txt".to_owned(), lines.join("\n")));
    }
    if let Some(x) = &pkg.reports.sat {
        let lines = [
            "# SAT Results".to_owned(),
            format!("SAT Test Date: {}", us_date(x.test_date)),
            format!("SAT Registration ID: {}", x.registration_id),
            format!("SAT Total Score: {}", x.total),
            format!("SAT Evidence-Based Reading and Writing: {}", x.ebrw),
            format!("SAT Math: {}", x.math),
        ];
        docs.push(("reports/sat.txt".to_owned(), lines.join("\n")));
    }
    if let Some(a) = &pkg.reports.ap {
        let mut lines = vec!["# AP Results".to_owned(), format!("AP Exam Year: {}", a.year)];
        lines.push(format!("AP Subjects: {}", a.subjects.iter().map(|s| s.subject.as_str()).collect::<Vec<_>>().join(", ")));
        lines.extend(a.subjects.iter().map(|s| format!("AP {} Exam: {}", s.subject, s.score)));
        docs.push(("reports/ap.txt".to_owned(), lines.join("\n")));
    }
    if let Some(i) = &pkg.reports.ib {
        let mut lines = vec![
            "# IB Results".to_owned(),
            format!("IB Session: {}", i.session),
            format!("IB Candidate ID: {}", i.candidate_id),
        ];
        lines.push(format!("IB Subjects: {}", i.subjects.iter().map(|s| s.subject.as_str()).collect::<Vec<_>>().join(", ")));
        lines.extend(i.subjects.iter().map(|s| format!("IB {}: {}", s.subject, s.score)));
        lines.push(format!("IB Core Points: {}", i.core_points));
        lines.push(format!("IB Total Points: {}", i.total_points));
        docs.push(("reports/ib.txt".to_owned(), lines.join("\n")));
    }
    if let Some(c) = &pkg.certificate {
        let lines = [
            "# Certificate".to_owned(),
            format!("Award Received: {}", c.award_type),
            format!("Award Issued By: {}", c.issuer),
            format!("Award Date: {}", us_date(c.date)),
        ];
        docs.push(("certificates/certificate.txt".to_owned(), lines.join("\n")));
    }
    if let Some(a) = &pkg.activity {
        let lines = [
            "# Activity Record".to_owned(),
            format!("Extracurricular Activity: {}", a.activity_type),
            format!("Activity Description: {}", a.description),
            format!("Activity Hours per Week: {}", a.hours_per_week),
            format!("Activity Years of Participation: {}", a.years),
        ];
        docs.push(("activities/activity.txt".to_owned(), lines.join("\n")));
    }
    docs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub packages: Vec<StudentPackage>,
    /// Indices of seeds that never produced a valid package.
    pub shortfall: Vec<usize>,
    pub attempts: usize,
}

/// Generates one package per seed, retrying invalid ones up to
/// `max_attempts` times. `fault(index, attempt)` lets tests break an
/// attempt; a broken attempt loses its IB report. Work is spread over
/// threads; results keep seed order.
pub fn generate_batch(
    seeds: &[StudentSeed],
    max_attempts: u32,
    fault: &(dyn Fn(usize, u32) -> bool + Sync),
) -> BatchOutcome {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let per = seeds.len().div_ceil(workers).max(1);
    let results: Vec<(Option<StudentPackage>, usize)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(per)
            .enumerate()
            .map(|(c, chunk)| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(j, seed)| generate_with_retries(c * per + j, seed, max_attempts, fault))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("generator thread")).collect()
    });
    let mut out = BatchOutcome { packages: Vec::new(), shortfall: Vec::new(), attempts: 0 };
    for (i, (pkg, attempts)) in results.into_iter().enumerate() {
        out.attempts += attempts;
        match pkg {
            Some(p) => out.packages.push(p),
            None => out.shortfall.push(i),
        }
    }
    out
}

fn generate_with_retries(
    index: usize,
    seed: &StudentSeed,
    max_attempts: u32,
    fault: &(dyn Fn(usize, u32) -> bool + Sync),
) -> (Option<StudentPackage>, usize) {
    for attempt in 0..max_attempts {
        let mut pkg = generate_package(seed);
        if fault(index, attempt) {
            pkg.reports.ib = None;
        }
        let report = validate_package(&pkg);
        if report.passed {
            return (Some(pkg), attempt as usize + 1);
        }
        tracing::warn!(index, attempt, failures = ?report.failures, "discarding incomplete package");
    }
    (None, max_attempts as usize)
}

const PACKAGE_FILE: &str = "package.json";

pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.to_lowercase().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_owned()
}

/// Directory of one package under `out`: `<school>/<index>_<student>`.
pub fn package_dir(out: &Path, index: usize, pkg: &StudentPackage) -> PathBuf {
    out.join(slug(&pkg.seed.school.name)).join(format!("{index:04}_{}", slug(&pkg.seed.legal_name)))
}

/// Removes student directories that lack a package file, then writes each
/// package with its rendered documents. `package.json` goes last, so a
/// directory holding it is complete.
pub fn write_packages(out: &Path, packages: &[StudentPackage]) -> Result<Vec<PathBuf>, SynthError> {
    remove_incomplete(out)?;
    let mut dirs = Vec::new();
    for (i, pkg) in packages.iter().enumerate() {
        let dir = package_dir(out, i, pkg);
        for sub in ["transcript", "reports", "certificates", "activities"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for (name, text) in render_package_text(pkg) {
            let p = dir.join(name);
            write_atomic(&p, text.as_bytes())?;
        }
        let p = dir.join(PACKAGE_FILE);
        let json = serde_json::to_vec_pretty(pkg).expect("package serializes");
        write_atomic(&p, &json)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

fn remove_incomplete(out: &Path) -> Result<(), SynthError> {
    let Ok(schools) = std::fs::read_dir(out) else { return Ok(()) };
    for school in schools.flatten() {
        if !school.path().is_dir() {
            continue;
        }
        let students = std::fs::read_dir(school.path()).map_err(io_err(&school.path()))?;
        for student in students.flatten() {
            let p = student.path();
            if p.is_dir() && !p.join(PACKAGE_FILE).exists() {
                tracing::info!(path = %p.display(), "removing incomplete package");
                std::fs::remove_dir_all(&p).map_err(io_err(&p))?;
            }
        }
    }
    Ok(())
}

/// Reads a package directory written by `write_packages`.
pub fn read_package(dir: &Path) -> Result<StudentPackage, SynthError> {
    let p = dir.join(PACKAGE_FILE);
    let bytes = std::fs::read(&p).map_err(io_err(&p))?;
    serde_json::from_slice(&bytes).map_err(|e| SynthError::Io { path: p, source: e.into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn course(g: Grade, credits: f64) -> Course {
        Course { name: "Biology".into(), grade: g, credits }
    }

    // Rational arithmetic on tenths of points and halves of credits avoids
    // floating point entirely.
    fn gpa_oracle(courses: &[Course]) -> f64 {
        let tenths = |g: Grade| match g {
            Grade::A => 40i64,
            Grade::AMinus => 37,
            Grade::BPlus => 33,
            Grade::B => 30,
        };
        let num: i64 = courses.iter().map(|c| tenths(c.grade) * (c.credits * 2.0) as i64).sum();
        let den: i64 = courses.iter().map(|c| (c.credits * 2.0) as i64).sum();
        // value*100 = num*10/den; round half up
        let scaled = num * 10;
        let q = (2 * scaled + den) / (2 * den);
        q as f64 / 100.0
    }

    #[test]
    fn gpa_examples() {
        assert_eq!(compute_gpa(&[course(Grade::A, 1.0), course(Grade::B, 1.0)]), 3.50);
        assert_eq!(compute_gpa(&[course(Grade::A, 1.0)]), 4.00);
        // 3.7 and 3.3 with 0.5/1.0 credits: (1.85 + 3.3) / 1.5 = 3.4333
        assert_eq!(compute_gpa(&[course(Grade::AMinus, 0.5), course(Grade::BPlus, 1.0)]), 3.43);
        // (4.0 + 3.7*0.5 + 3.0*0.5) / 2.0 = 3.675, a half that must round up
        assert_eq!(compute_gpa(&[course(Grade::A, 1.0), course(Grade::AMinus, 0.5), course(Grade::B, 0.5)]), 3.68);
    }

    #[test]
    fn seed_42_is_byte_identical() {
        let a = serde_json::to_string(&generate_package(&sample_seed(42))).unwrap();
        let b = serde_json::to_string(&generate_package(&sample_seed(42))).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, serde_json::to_string(&generate_package(&sample_seed(43))).unwrap());
    }

    #[test]
    fn generated_packages_validate() {
        for s in 0..200 {
            let p = generate_package(&sample_seed(s));
            let r = validate_package(&p);
            assert!(r.passed, "seed {s}: {:?}", r.failures);
        }
    }

    #[test]
    fn validation_failures() {
        let mut p = generate_package(&sample_seed(1));
        p.reports.ib = None;
        assert_eq!(validate_package(&p).failures, ["missing_report:ib"]);
        let mut p = generate_package(&sample_seed(1));
        p.transcript.gpa = (p.transcript.gpa + 0.5).min(4.0) - if p.transcript.gpa > 3.5 { 1.0 } else { 0.0 };
        assert!(validate_package(&p).failures.contains(&"gpa_inconsistent".to_string()));
        let mut p = generate_package(&sample_seed(1));
        p.reports.sat.as_mut().unwrap().math += 10;
        assert!(validate_package(&p).failures.contains(&"sat_sum_mismatch".to_string()));
    }

    #[test]
    fn rendering_has_expected_lines_once() {
        let p = generate_package(&sample_seed(7));
        let docs = render_package_text(&p);
        let all: Vec<&str> = docs.iter().flat_map(|(_, t)| t.lines()).collect();
        let transcript = &docs.iter().find(|(n, _)| n == "transcript/transcript.txt").unwrap().1;
        assert!(transcript.contains(&format!("Cumulative GPA: {:.2}", p.transcript.gpa)));
        let act = &docs.iter().find(|(n, _)| n == "reports/act.txt").unwrap().1;
        assert!(act.contains(&format!("Composite: {}", p.reports.act.as_ref().unwrap().composite)));
        let mut labels = BTreeSet::new();
        for line in all.iter().filter(|l| !l.starts_with('#')) {
            assert_eq!(all.iter().filter(|m| *m == line).count(), 1, "{line}");
            if let Some((label, _)) = line.split_once(": ") {
                assert!(labels.insert(label), "label {label} repeated");
            }
        }
        assert_eq!(docs.len(), 8);
    }

    #[test]
    fn batch_recovers_from_faults() {
        let seeds: Vec<StudentSeed> = (0..30).map(|i| sample_seed(1000 + i)).collect();
        let fault = |i: usize, attempt: u32| i == 3 && attempt == 0;
        let b = generate_batch(&seeds, 3, &fault);
        assert_eq!(b.packages.len(), 30);
        assert!(b.shortfall.is_empty());
        assert_eq!(b.attempts, 31);
        let always = |i: usize, _: u32| i == 5;
        let b = generate_batch(&seeds, 3, &always);
        assert_eq!((b.packages.len(), b.shortfall.clone()), (29, vec![5]));
    }

    #[test]
    fn write_and_cleanup() {
        let dir = tempfile::tempdir().unwrap();
        let stale = dir.path().join("old_school").join("0000_partial");
        std::fs::create_dir_all(&stale).unwrap();
        let pkgs: Vec<StudentPackage> = (0..3).map(|i| generate_package(&sample_seed(i))).collect();
        let dirs = write_packages(dir.path(), &pkgs).unwrap();
        assert!(!stale.exists());
        for (d, p) in dirs.iter().zip(&pkgs) {
            for sub in ["transcript", "reports", "certificates", "activities"] {
                assert!(d.join(sub).is_dir());
            }
            assert_eq!(&read_package(d).unwrap(), p);
        }
    }

    #[test]
    fn seed_csv() {
        let csv = "legal_name,used_name,gender,race,ethnicity,languages,school_name,school_city,school_state\n\
                   Ana Maria Ruiz,Ana,Female,White,Hispanic or Latino,English;Spanish,Mesa Ridge High School,Tucson,AZ\n";
        let seeds = read_seed_csv(csv.as_bytes(), 100).unwrap();
        assert_eq!(seeds[0].languages, ["English", "Spanish"]);
        assert_eq!(seeds[0].rng_seed, 100);
        let bad = "legal_name,used_name,gender,race,ethnicity,languages,school_name,school_city,school_state\n,x,,,,,s,c,st\n";
        assert!(matches!(read_seed_csv(bad.as_bytes(), 0), Err(SynthError::BadSeed { row: 1, .. })));
    }

    proptest! {
        #[test]
        fn gpa_matches_rational_oracle(picks in proptest::collection::vec((0usize..4, proptest::bool::ANY), 1..12)) {
            let courses: Vec<Course> = picks.iter().map(|(g, half)| course(Grade::ALL[*g], if *half { 0.5 } else { 1.0 })).collect();
            prop_assert!((compute_gpa(&courses) - gpa_oracle(&courses)).abs() < 1e-9);
        }

        #[test]
        fn any_seed_validates(seed in any::<u64>()) {
            let p = generate_package(&sample_seed(seed));
            let sat = p.reports.sat.as_ref().unwrap();
            prop_assert_eq!(sat.total, sat.ebrw + sat.math);
            prop_assert!(validate_package(&p).passed);
        }
    }
}
