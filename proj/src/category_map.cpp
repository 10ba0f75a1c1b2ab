#include "markovdetect/category_map.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "markovdetect/errors.hpp"

namespace markovdetect {

namespace {

std::string lowered(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string_view canonical_prefix(std::string_view p) {
  if (p == "repz") return "repe";
  if (p == "repnz") return "repne";
  return p;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

// Categorization 1. Conditional jumps, setcc and cmovcc are generated below.
constexpr const char* kMath[] = {
    "add", "adc", "sub", "sbb", "mul", "imul", "div", "idiv", "inc", "dec",
    "neg", "cmp", "xadd", "aaa", "aad", "aam", "aas", "daa", "das",
    "fadd", "faddp", "fiadd", "fsub", "fsubp", "fsubr", "fsubrp", "fisub",
    "fmul", "fmulp", "fimul", "fdiv", "fdivp", "fdivr", "fdivrp", "fidiv",
    "fsqrt", "fabs", "fchs", "fcom", "fcomp", "fcompp", "fucom", "fucomp",
    "fucompp", "fcomi", "fcomip", "fucomi", "fucomip", "ftst", "frndint",
    "fscale", "fprem", "fprem1", "fsin", "fcos", "fsincos", "fptan", "fpatan",
    "f2xm1", "fyl2x", "fyl2xp1",
    "addss", "addsd", "addps", "addpd", "subss", "subsd", "subps", "subpd",
    "mulss", "mulsd", "mulps", "mulpd", "divss", "divsd", "divps", "divpd",
    "sqrtss", "sqrtsd", "sqrtps", "sqrtpd", "minss", "minsd", "maxss", "maxsd",
    "comiss", "comisd", "ucomiss", "ucomisd", "paddb", "paddw", "paddd",
    "paddq", "psubb", "psubw", "psubd", "psubq", "pmullw", "pmulhw",
    "pmuludq", "pmaddwd", "pcmpeqb", "pcmpeqw", "pcmpeqd", "pcmpgtb",
    "pcmpgtw", "pcmpgtd", "cvtsi2sd", "cvtsi2ss", "cvttsd2si", "cvttss2si",
    "cvtsd2ss", "cvtss2sd", "cvtdq2pd", "cvtdq2ps"};

constexpr const char* kLogic[] = {
    "and", "or", "xor", "not", "test", "shl", "shr", "sal", "sar", "rol",
    "ror", "rcl", "rcr", "shld", "shrd", "bt", "bts", "btr", "btc", "bsf",
    "bsr", "bswap", "popcnt", "lzcnt", "tzcnt", "andn", "pand", "pandn", "por",
    "pxor", "andps", "andpd", "andnps", "andnpd", "orps", "orpd", "xorps",
    "xorpd", "psllw", "pslld", "psllq", "psrlw", "psrld", "psrlq", "psraw",
    "psrad", "pslldq", "psrldq", "clc", "stc", "cmc", "cld", "std", "lahf",
    "sahf", "salc"};

constexpr const char* kPriv[] = {
    "cli", "sti", "hlt", "in", "out", "insb", "insw", "insd", "outsb", "outsw",
    "outsd", "lgdt", "lidt", "lldt", "ltr", "sgdt", "sidt", "sldt", "str",
    "lmsw", "smsw", "clts", "invd", "wbinvd", "invlpg", "rdmsr", "wrmsr",
    "rdpmc", "rdtsc", "rdtscp", "int", "int1", "int3", "into", "iret",
    "iretd", "iretq", "sysenter", "sysexit", "syscall", "sysret", "swapgs",
    "lar", "lsl", "verr", "verw", "arpl", "vmcall", "vmlaunch", "vmresume",
    "vmxoff", "vmxon", "monitor", "mwait", "xgetbv", "xsetbv", "cpuid", "ud2"};

constexpr const char* kBranch[] = {
    "jmp", "call", "ret", "retn", "retf", "loop", "loope", "loopz", "loopne",
    "loopnz", "jcxz", "jecxz", "jrcxz", "ljmp", "lcall", "lret"};

constexpr const char* kConditionCodes[] = {
    "o", "no", "b", "nae", "c", "ae", "nb", "nc", "e", "z", "ne", "nz", "be",
    "na", "a", "nbe", "s", "ns", "p", "pe", "np", "po", "l", "nge", "ge", "nl",
    "le", "ng", "g", "nle"};

constexpr const char* kMemory[] = {
    "mov", "movzx", "movsx", "movsxd", "movabs", "lea", "xchg", "cmpxchg",
    "cmpxchg8b", "cmpxchg16b", "movsb", "movsw", "movsd", "movsq", "movs",
    "stosb", "stosw", "stosd", "stosq", "stos", "lodsb", "lodsw", "lodsd",
    "lodsq", "lods", "scasb", "scasw", "scasd", "scasq", "scas", "cmpsb",
    "cmpsw", "cmpsq", "cmps", "xlat", "xlatb", "cbw", "cwde", "cdqe", "cwd",
    "cdq", "cqo", "lds", "les", "lfs", "lgs", "lss", "movaps", "movups",
    "movapd", "movupd", "movdqa", "movdqu", "movq", "movd", "movss", "movlps",
    "movhps", "movlpd", "movhpd", "movnti", "movntdq", "movntps", "prefetch",
    "prefetchnta", "prefetcht0", "prefetcht1", "prefetcht2", "fld", "fst",
    "fstp", "fild", "fist", "fistp", "fisttp", "fxch", "fldz", "fld1",
    "fldpi", "fldl2e", "fldln2", "fldlg2", "fldl2t", "fldcw", "fnstcw",
    "fstcw", "fnstsw", "fstsw", "fldenv", "fnstenv", "fnsave", "frstor",
    "fxsave", "fxrstor", "punpcklbw", "punpcklwd", "punpckldq", "punpckhbw",
    "punpckhwd", "punpckhdq", "packsswb", "packuswb", "packssdw", "pshufd",
    "pshufw", "shufps", "shufpd", "unpcklps", "unpckhps", "pinsrw", "pextrw",
    "pmovmskb", "movmskps", "lfence", "sfence", "mfence", "clflush"};

constexpr const char* kStack[] = {
    "push", "pop", "pusha", "pushad", "popa", "popad", "pushf", "pushfd",
    "pushfq", "popf", "popfd", "popfq", "enter", "leave"};

constexpr const char* kNop[] = {"nop", "fnop", "pause", "fwait", "wait"};

}  // namespace

std::string_view to_string(Categorization id) {
  switch (id) {
    case Categorization::Cat1: return "cat1";
    case Categorization::Cat2: return "cat2";
    case Categorization::Cat3: return "cat3";
    case Categorization::Cat4: return "cat4";
  }
  return "unknown";
}

Categorization categorization_from_int(int value) {
  if (value < 1 || value > 4) {
    throw InvalidInput("categorization id must be 1-4, got " + std::to_string(value));
  }
  return static_cast<Categorization>(value);
}

bool is_instruction_prefix(std::string_view t) {
  return t == "rep" || t == "repe" || t == "repz" || t == "repne" ||
         t == "repnz" || t == "lock";
}

CategoryMap::CategoryMap(Categorization id, std::vector<std::string> names,
                         Category fallback)
    : id_(id), names_(std::move(names)), fallback_(fallback) {
  if (names_.empty()) throw InvalidInput("category map needs at least one category");
  if (fallback_ >= names_.size()) throw InvalidInput("fallback category out of range");
}

CategoryMap CategoryMap::builtin_cat1() {
  CategoryMap map(Categorization::Cat1,
                  {"math", "logic", "priv", "branch", "memory", "stack", "nop", "other"},
                  7);
  for (const char* m : kMath) map.add(m, 0);
  for (const char* m : kLogic) map.add(m, 1);
  for (const char* m : kPriv) map.add(m, 2);
  for (const char* m : kBranch) map.add(m, 3);
  for (const char* cc : kConditionCodes) {
    map.add(std::string("j") + cc, 3);
    map.add(std::string("set") + cc, 1);
    map.add(std::string("cmov") + cc, 4);
  }
  for (const char* m : kMemory) map.add(m, 4);
  for (const char* m : kStack) map.add(m, 5);
  for (const char* m : kNop) map.add(m, 6);
  return map;
}

void CategoryMap::add(std::string_view mnemonic, Category category) {
  if (category >= names_.size()) {
    throw InvalidInput("category index " + std::to_string(category) +
                       " out of range for mnemonic '" + std::string(mnemonic) + "'");
  }
  auto key = lowered(mnemonic);
  auto tokens = split_ws(key);
  if (tokens.size() == 2 && is_instruction_prefix(tokens[0])) {
    key = std::string(canonical_prefix(tokens[0])) + " " + std::string(tokens[1]);
  }
  auto [it, inserted] = table_.insert_or_assign(key, category);
  if (inserted) {
    ordered_.emplace_back(std::move(key), category);
  } else {
    for (auto& e : ordered_) {
      if (e.first == it->first) e.second = category;
    }
  }
}

std::optional<Category> CategoryMap::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

std::optional<Category> CategoryMap::find(std::string_view key) const {
  auto it = table_.find(std::string(key));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

Category CategoryMap::lookup(std::string_view mnemonic) const {
  return find(lowered(mnemonic)).value_or(fallback_);
}

Category CategoryMap::lookup(std::string_view first, std::string_view second) const {
  const auto head = lowered(first);
  if (!is_instruction_prefix(head) || second.empty()) return lookup(first);
  const auto base = lowered(second);
  if (auto hit = find(std::string(canonical_prefix(head)) + " " + base)) return *hit;
  if (auto hit = find(base)) return *hit;
  return fallback_;
}

CategoryMap CategoryMap::parse(std::istream& in, std::string_view source) {
  int id = 2;
  std::vector<std::string> names;
  std::optional<std::string> fallback_name;
  std::vector<std::pair<std::string, std::string>> pending;
  std::size_t line_no = 0;
  std::string line;
  auto fail = [&](const std::string& why) {
    throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": " + why,
                     line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    const auto head = lowered(tokens.front());
    if (head == "categorization") {
      if (tokens.size() != 2) fail("expected 'categorization <1-4>'");
      try {
        id = std::stoi(std::string(tokens[1]));
      } catch (const std::exception&) {
        fail("bad categorization id");
      }
    } else if (head == "categories") {
      if (!names.empty()) fail("duplicate 'categories' header");
      for (std::size_t i = 1; i < tokens.size(); ++i) names.emplace_back(tokens[i]);
      if (names.empty()) fail("empty category list");
    } else if (head == "fallback") {
      if (tokens.size() != 2) fail("expected 'fallback <category>'");
      fallback_name = std::string(tokens[1]);
    } else {
      if (names.empty()) fail("mapping entry before 'categories' header");
      if (tokens.size() < 2) fail("expected '<mnemonic> <category>'");
      std::string mnemonic;
      for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (i) mnemonic += ' ';
        mnemonic += tokens[i];
      }
      pending.emplace_back(std::move(mnemonic), std::string(tokens.back()));
      if (std::find(names.begin(), names.end(), pending.back().second) == names.end()) {
        fail("unknown category '" + pending.back().second + "'");
      }
    }
  }
  if (in.bad()) throw IoError("failed reading category map " + std::string(source));
  if (names.empty()) throw ParseError(std::string(source) + ": missing 'categories' header", line_no);

  Category fallback = static_cast<Category>(names.size() - 1);
  if (!fallback_name) {
    auto it = std::find(names.begin(), names.end(), "other");
    if (it != names.end()) fallback = static_cast<Category>(it - names.begin());
  } else {
    auto it = std::find(names.begin(), names.end(), *fallback_name);
    if (it == names.end()) {
      throw ParseError(std::string(source) + ": fallback '" + *fallback_name +
                           "' is not a declared category",
                       line_no);
    }
    fallback = static_cast<Category>(it - names.begin());
  }
  CategoryMap map(categorization_from_int(id), std::move(names), fallback);
  for (const auto& [mnemonic, cat] : pending) map.add(mnemonic, *map.index_of(cat));
  return map;
}

CategoryMap CategoryMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open category map " + path.string());
  return parse(in, path.string());
}

void CategoryMap::write(std::ostream& out) const {
  out << "categorization " << static_cast<int>(id_) << "\n";
  out << "categories";
  for (const auto& n : names_) out << ' ' << n;
  out << "\nfallback " << names_[fallback_] << "\n";
  for (const auto& [mnemonic, cat] : ordered_) out << mnemonic << ' ' << names_[cat] << "\n";
}

}  // namespace markovdetect
