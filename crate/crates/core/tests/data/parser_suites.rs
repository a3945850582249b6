// Shared parser suites, included by the unit tests and the acceptance run.

/// Source and value for operator precedence and associativity.
const PRECEDENCE: &[(&str, f64)] = &[
    ("2+3*4", 14.0),
    ("(2+3)*4", 20.0),
    ("2-3-4", -5.0),
    ("24/4/2", 3.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("2^-1", 0.5),
    ("-3*-2", 6.0),
    ("--4", 4.0),
    ("1 - -1", 2.0),
    ("2*3^2", 18.0),
    ("8/2^2", 2.0),
    ("  7 -  2*  3 ", 1.0),
    ("1.5e1 + .5", 15.5),
    ("2E-1*10", 2.0),
];

/// Source and byte offset of the reported parse error.
const ERROR_OFFSETS: &[(&str, usize)] = &[
    ("foo(x1)", 0),
    ("1 + bar", 4),
    ("x3", 0),
    ("2 * (1 + 2", 10),
    ("1 +", 3),
    ("1 $ 2", 2),
    ("1 2", 2),
    ("sin(1, 2)", 0),
    ("3 + cos", 4),
    ("", 0),
    ("(", 1),
    ("pi(2)", 0),
];

/// Expressions that must survive print-then-parse unchanged.
const CORPUS: [&str; 50] = [
    "1",
    "x1",
    "pi",
    "t",
    "-x1",
    "2+3*4",
    "(2+3)*4",
    "2-3-4",
    "2-(3-4)",
    "2/3/4",
    "2/(3/4)",
    "2^3^2",
    "(2^3)^2",
    "-2^2",
    "(-2)^2",
    "2^-1",
    "2^-x1^2",
    "--x1",
    "1 - -x1",
    "x1*-x2",
    "-(x1+x2)",
    "-(x1*x2)",
    "sin(x1)",
    "cos(2*pi*x1)",
    "exp(-cos(2*pi*x1))",
    "log(2 + sin(x1))",
    "sqrt(abs(x1 - 0.5))",
    "1 + 0.5*cos(2*pi*x1)",
    "2 + cos(2*pi*x1)",
    "1 + 0.25*sin(2*pi*x1)*cos(2*pi*x2)",
    "exp(t)*x1",
    "1/(1 + t)",
    "(1 + x1)/(2 + x2)",
    "x1^2 + x2^2",
    "(x1 + x2)^2",
    "x1^(x2 + 1)",
    "-x1^-x2",
    "3*(x1 - 0.5)^2 - 0.25",
    "0.001*x1",
    "1e-5 + x1",
    "2.5e3*t",
    "abs(-x1)",
    "sin(cos(exp(x1)))",
    "((x1))",
    "1 - (2 - (3 - (4 - x1)))",
    "x1 - x2 + t - pi",
    "x1 / x2 * t / pi",
    "(x1 - x2) * (t + pi)",
    "-sin(x1)^2",
    "(-sin(x1))^2",
];
